#include "ecgreid/delineate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ecgreid/error.hpp"
#include "ecgreid/filter.hpp"
#include "ecgreid/text.hpp"

namespace ecgreid {

char wave_letter(Wave w) { return "PQRST"[static_cast<int>(w)]; }

Wave parse_wave(char c) {
  switch (c) {
    case 'P': return Wave::P;
    case 'Q': return Wave::Q;
    case 'R': return Wave::R;
    case 'S': return Wave::S;
    case 'T': return Wave::T;
    default: throw ConfigError(std::string("unknown wave '") + c + "'");
  }
}

bool BeatAnnotation::complete() const {
  return std::all_of(index.begin(), index.end(), [](const auto& i) { return i.has_value(); });
}

namespace {

std::size_t samples_for(double seconds, double fs) {
  return static_cast<std::size_t>(std::llround(seconds * fs));
}

std::size_t odd_width(double seconds, double fs) {
  const std::size_t w = samples_for(seconds, fs);
  return w % 2 == 0 ? w + 1 : w;
}

// Index of the max (or min) over [lo, hi], first occurrence on ties.
std::size_t arg_extreme(std::span<const double> x, std::size_t lo, std::size_t hi, bool maximum) {
  std::size_t best = lo;
  for (std::size_t i = lo + 1; i <= hi; ++i)
    if (maximum ? x[i] > x[best] : x[i] < x[best]) best = i;
  return best;
}

struct Candidate {
  std::size_t index;
  double peak;
};

}  // namespace

std::vector<std::size_t> detect_r_peaks(std::span<const double> samples, double fs,
                                        const DetectorConfig& cfg) {
  if (fs < 100.0) throw ConfigError("R-peak detection needs fs >= 100 Hz, got " +
                                    std::to_string(fs));
  const std::size_t n = samples.size();
  if (static_cast<double>(n) < 2.0 * fs)
    throw InputError("signal shorter than 2 s cannot be searched for R peaks");

  Sos band = butterworth_highpass(2, cfg.bandpass_low_hz, fs);
  const Sos lp = butterworth_lowpass(2, cfg.bandpass_high_hz, fs);
  band.insert(band.end(), lp.begin(), lp.end());
  const auto bp = filtfilt(band, samples);

  std::vector<double> slope(n, 0.0);
  for (std::size_t i = 2; i + 2 < n; ++i)
    slope[i] = (2.0 * bp[i + 1] + bp[i + 2] - bp[i - 2] - 2.0 * bp[i - 1]) * fs / 8.0;
  std::vector<double> squared(n);
  std::transform(slope.begin(), slope.end(), squared.begin(), [](double d) { return d * d; });
  const auto mwi = moving_average(squared, odd_width(cfg.integration_window_s, fs));

  const double global_max = *std::max_element(mwi.begin(), mwi.end());
  if (!(global_max > 1e-30)) return {};

  // Local maxima that dominate +-half the refractory period.
  const std::size_t half = std::max<std::size_t>(1, samples_for(cfg.refractory_s / 2.0, fs));
  std::vector<Candidate> candidates;
  for (std::size_t i = 1; i + 1 < n; ++i) {
    if (!(mwi[i] > mwi[i - 1] && mwi[i] >= mwi[i + 1])) continue;
    const std::size_t lo = i >= half ? i - half : 0;
    const std::size_t hi = std::min(n - 1, i + half);
    bool dominant = true;
    for (std::size_t j = lo; j <= hi && dominant; ++j)
      if (mwi[j] > mwi[i] || (mwi[j] == mwi[i] && j < i)) dominant = false;
    if (dominant) candidates.push_back({i, mwi[i]});
  }

  const std::size_t init_len = samples_for(2.0, fs);
  double spki = *std::max_element(mwi.begin(), mwi.begin() + init_len) / 3.0;
  double npki = std::accumulate(mwi.begin(), mwi.begin() + init_len, 0.0) /
                static_cast<double>(init_len) / 2.0;

  const std::size_t refractory = samples_for(cfg.refractory_s, fs);
  const std::size_t t_check = samples_for(cfg.t_wave_check_s, fs);
  const std::size_t slope_half = samples_for(cfg.integration_window_s / 2.0, fs);
  auto max_slope = [&](std::size_t c) {
    const std::size_t lo = c >= slope_half ? c - slope_half : 0;
    const std::size_t hi = std::min(n - 1, c + slope_half);
    double m = 0.0;
    for (std::size_t j = lo; j <= hi; ++j) m = std::max(m, std::abs(slope[j]));
    return m;
  };

  std::vector<std::size_t> qrs;
  std::vector<double> qrs_slope;
  std::vector<Candidate> noise_since_last;
  auto rr_average = [&]() {
    const std::size_t k = std::min<std::size_t>(8, qrs.size() - 1);
    return static_cast<double>(qrs.back() - qrs[qrs.size() - 1 - k]) / static_cast<double>(k);
  };
  auto accept = [&](const Candidate& c, double weight) {
    qrs.push_back(c.index);
    qrs_slope.push_back(max_slope(c.index));
    spki = weight * c.peak + (1.0 - weight) * spki;
    noise_since_last.clear();
  };

  for (const auto& c : candidates) {
    if (!qrs.empty() && c.index - qrs.back() < refractory) {
      npki = 0.125 * c.peak + 0.875 * npki;
      continue;
    }
    double thr1 = npki + 0.25 * (spki - npki);

    if (qrs.size() >= 2 &&
        static_cast<double>(c.index - qrs.back()) > cfg.search_back_factor * rr_average()) {
      const double thr2 = 0.5 * thr1;
      const Candidate* best = nullptr;
      for (const auto& m : noise_since_last)
        if (m.index - qrs.back() >= refractory && m.peak > thr2 && (!best || m.peak > best->peak))
          best = &m;
      if (best) {
        const Candidate found = *best;
        accept(found, 0.25);
        thr1 = npki + 0.25 * (spki - npki);
        if (c.index - qrs.back() < refractory) {
          npki = 0.125 * c.peak + 0.875 * npki;
          continue;
        }
      }
    }

    if (c.peak > thr1) {
      if (!qrs.empty() && c.index - qrs.back() < t_check &&
          max_slope(c.index) < 0.5 * qrs_slope.back()) {
        npki = 0.125 * c.peak + 0.875 * npki;
        noise_since_last.push_back(c);
        continue;
      }
      accept(c, 0.125);
    } else {
      npki = 0.125 * c.peak + 0.875 * npki;
      noise_since_last.push_back(c);
    }
  }

  // Move each detection onto the signal maximum, then re-apply the refractory rule.
  const std::size_t r_half = samples_for(cfg.r_search_s, fs);
  std::vector<std::size_t> peaks;
  for (const std::size_t k : qrs) {
    const std::size_t lo = k >= r_half ? k - r_half : 0;
    const std::size_t hi = std::min(n - 1, k + r_half);
    peaks.push_back(arg_extreme(samples, lo, hi, true));
  }
  std::sort(peaks.begin(), peaks.end());
  std::vector<std::size_t> out;
  for (const std::size_t p : peaks) {
    if (!out.empty() && p - out.back() < refractory) {
      if (samples[p] > samples[out.back()]) out.back() = p;
      continue;
    }
    out.push_back(p);
  }
  return out;
}

std::vector<BeatAnnotation> delineate_beats(std::span<const double> samples, double fs,
                                            std::span<const std::size_t> r_peaks,
                                            const DelineationConfig& cfg) {
  std::vector<BeatAnnotation> beats;
  if (r_peaks.empty()) return beats;
  const auto n = static_cast<long long>(samples.size());

  auto smooth = [&](double width_s) {
    const std::size_t w = odd_width(width_s, fs);
    return w > 1 ? moving_average(samples, w) : std::vector<double>(samples.begin(), samples.end());
  };
  const auto qs_sig = smooth(cfg.qs_smoothing_s);
  const auto pt_sig = smooth(cfg.pt_smoothing_s);

  auto window = [&](const std::vector<double>& sig, long long lo, long long hi, long long clip_lo,
                    long long clip_hi, bool maximum) -> std::optional<std::size_t> {
    if (lo < 0 || hi >= n) return std::nullopt;
    lo = std::max(lo, clip_lo);
    hi = std::min(hi, clip_hi);
    if (lo > hi) return std::nullopt;
    return arg_extreme(sig, static_cast<std::size_t>(lo), static_cast<std::size_t>(hi), maximum);
  };
  const auto q_w = static_cast<long long>(samples_for(cfg.q_window_s, fs));
  const auto s_w = static_cast<long long>(samples_for(cfg.s_window_s, fs));
  const auto p_b = static_cast<long long>(samples_for(cfg.p_window_begin_s, fs));
  const auto p_e = static_cast<long long>(samples_for(cfg.p_window_end_s, fs));
  const auto t_b = static_cast<long long>(samples_for(cfg.t_window_begin_s, fs));
  const auto t_e = static_cast<long long>(samples_for(cfg.t_window_end_s, fs));

  for (std::size_t i = 0; i < r_peaks.size(); ++i) {
    const auto r = static_cast<long long>(r_peaks[i]);
    if (r >= n) throw InputError("R peak index beyond end of signal");
    const long long prev = i > 0 ? static_cast<long long>(r_peaks[i - 1]) + 1 : 0;
    const long long next = i + 1 < r_peaks.size() ? static_cast<long long>(r_peaks[i + 1]) - 1 : n - 1;

    BeatAnnotation b;
    b.fs = fs;
    b.index[2] = static_cast<std::size_t>(r);
    b.index[1] = window(qs_sig, r - q_w + 1, r - 1, prev, next, false);
    b.index[3] = window(qs_sig, r + 1, r + s_w - 1, prev, next, false);
    if (b.index[1]) {
      const auto q = static_cast<long long>(*b.index[1]);
      b.index[0] = window(pt_sig, q - p_b + 1, q - p_e - 1, prev, next, true);
    }
    if (b.index[3]) {
      const auto s = static_cast<long long>(*b.index[3]);
      b.index[4] = window(pt_sig, s + t_b + 1, s + t_e - 1, prev, next, true);
    }
    for (std::size_t k = 0; k < 5; ++k)
      if (b.index[k]) b.amplitude_mv[k] = samples[*b.index[k]];
    beats.push_back(b);
  }
  return beats;
}

std::string format_annotations_csv(std::span<const BeatAnnotation> beats) {
  std::string out = "beat,r_index,p_index,q_index,s_index,t_index\n";
  auto field = [&](const std::optional<std::size_t>& v) {
    out += ',';
    if (v) out += std::to_string(*v);
  };
  for (std::size_t i = 0; i < beats.size(); ++i) {
    out += std::to_string(i);
    for (const int k : {2, 0, 1, 3, 4}) field(beats[i].index[k]);
    out += '\n';
  }
  return out;
}

std::vector<BeatAnnotation> parse_annotations_csv(std::string_view csv,
                                                  std::span<const double> samples, double fs,
                                                  const std::string& source) {
  auto lines = text::split(csv, '\n');
  while (!lines.empty() && text::trim(lines.back()).empty()) lines.pop_back();
  if (lines.empty() || text::trim(lines[0]) != "beat,r_index,p_index,q_index,s_index,t_index")
    throw ParseError(source, 1, "expected annotation header");
  std::vector<BeatAnnotation> beats;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const auto fields = text::split(text::trim(lines[li]), ',');
    if (fields.size() != 6) throw ParseError(source, li + 1, "expected 6 fields");
    BeatAnnotation b;
    b.fs = fs;
    constexpr int order[] = {2, 0, 1, 3, 4};
    for (int f = 0; f < 5; ++f) {
      const auto s = text::trim(fields[f + 1]);
      if (s.empty()) {
        if (order[f] == 2) throw ParseError(source, li + 1, "missing r_index");
        continue;
      }
      long long v;
      if (!text::parse_int(s, v) || v < 0 || static_cast<std::size_t>(v) >= samples.size())
        throw ParseError(source, li + 1, "invalid index \"" + std::string(s) + "\"");
      b.index[order[f]] = static_cast<std::size_t>(v);
      b.amplitude_mv[order[f]] = samples[static_cast<std::size_t>(v)];
    }
    beats.push_back(b);
  }
  return beats;
}

}  // namespace ecgreid
