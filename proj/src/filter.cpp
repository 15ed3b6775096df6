#include "ecgreid/filter.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

#include "ecgreid/error.hpp"

namespace ecgreid {

namespace {

constexpr double kPi = std::numbers::pi;

void check_band(double freq_hz, double fs, const char* what) {
  if (!(fs > 0.0)) throw ConfigError("sampling rate must be positive");
  if (!(freq_hz > 0.0)) throw ConfigError(std::string(what) + " must be positive");
  if (freq_hz >= fs / 2.0)
    throw ConfigError(std::string(what) + " " + std::to_string(freq_hz) +
                      " Hz is not below Nyquist (" + std::to_string(fs / 2.0) + " Hz)");
}

Biquad normalise(double b0, double b1, double b2, double a0, double a1, double a2) {
  return {b0 / a0, b1 / a0, b2 / a0, a1 / a0, a2 / a0};
}

// Damping factors of the conjugate pole pairs of an order-n Butterworth prototype.
std::vector<double> pair_damping(int order) {
  std::vector<double> z;
  for (int k = 1; k <= order / 2; ++k)
    z.push_back(std::sin(kPi * (2.0 * k - 1.0) / (2.0 * order)));
  return z;
}

Sos butterworth(int order, double cutoff_hz, double fs, bool highpass) {
  if (order < 1) throw ConfigError("filter order must be >= 1");
  check_band(cutoff_hz, fs, "cutoff");
  const double k = 2.0 * fs;
  const double w = k * std::tan(kPi * cutoff_hz / fs);  // prewarped analog cutoff
  Sos sos;
  for (const double zeta : pair_damping(order)) {
    const double a0 = k * k + 2.0 * zeta * w * k + w * w;
    const double a1 = 2.0 * (w * w - k * k);
    const double a2 = k * k - 2.0 * zeta * w * k + w * w;
    if (highpass)
      sos.push_back(normalise(k * k, -2.0 * k * k, k * k, a0, a1, a2));
    else
      sos.push_back(normalise(w * w, 2.0 * w * w, w * w, a0, a1, a2));
  }
  if (order % 2 == 1) {
    const double a0 = k + w;
    const double a1 = w - k;
    if (highpass)
      sos.push_back(normalise(k, -k, 0.0, a0, a1, 0.0));
    else
      sos.push_back(normalise(w, w, 0.0, a0, a1, 0.0));
  }
  return sos;
}

// Section state for a constant input, so a DC-valued edge starts without a step.
void steady_state(const Biquad& s, double x0, double& z1, double& z2, double& y0) {
  const double den = 1.0 + s.a1 + s.a2;
  y0 = den == 0.0 ? 0.0 : x0 * (s.b0 + s.b1 + s.b2) / den;
  z2 = s.b2 * x0 - s.a2 * y0;
  z1 = y0 - s.b0 * x0;
}

std::size_t reflect_index(long long i, std::size_t n) {
  if (n == 1) return 0;
  const long long period = 2 * static_cast<long long>(n - 1);
  long long m = i % period;
  if (m < 0) m += period;
  return static_cast<std::size_t>(m < static_cast<long long>(n) ? m : period - m);
}

}  // namespace

void validate(const FilterSpec& spec, double fs) {
  check_band(spec.highpass_cutoff_hz, fs, "highpass cutoff");
  check_band(spec.powerline_freq_hz, fs, "powerline frequency");
  if (spec.highpass_order < 1) throw ConfigError("highpass order must be >= 1");
  if (!(spec.notch_quality > 0.0)) throw ConfigError("notch quality must be positive");
}

Sos butterworth_highpass(int order, double cutoff_hz, double fs) {
  return butterworth(order, cutoff_hz, fs, true);
}

Sos butterworth_lowpass(int order, double cutoff_hz, double fs) {
  return butterworth(order, cutoff_hz, fs, false);
}

Sos iir_notch(double freq_hz, double quality, double fs) {
  check_band(freq_hz, fs, "notch frequency");
  if (!(quality > 0.0)) throw ConfigError("notch quality must be positive");
  const double w0 = 2.0 * kPi * freq_hz / fs;
  const double bw = w0 / quality;
  const double gain = 1.0 / (1.0 + std::tan(bw / 2.0));
  const double c = std::cos(w0);
  return {Biquad{gain, -2.0 * gain * c, gain, -2.0 * gain * c, 2.0 * gain - 1.0}};
}

double magnitude_response(const Sos& sos, double freq_hz, double fs) {
  const std::complex<double> zi = std::polar(1.0, -2.0 * kPi * freq_hz / fs);  // z^-1
  double mag = 1.0;
  for (const auto& s : sos) {
    const auto num = s.b0 + s.b1 * zi + s.b2 * zi * zi;
    const auto den = 1.0 + s.a1 * zi + s.a2 * zi * zi;
    mag *= std::abs(num / den);
  }
  return mag;
}

std::size_t settle_length(const Sos& sos) {
  double r_max = 0.0;
  for (const auto& s : sos) {
    // Roots of z^2 + a1 z + a2.
    const std::complex<double> disc = std::sqrt(std::complex<double>(s.a1 * s.a1 - 4.0 * s.a2));
    const double r1 = std::abs((-s.a1 + disc) / 2.0);
    const double r2 = std::abs((-s.a1 - disc) / 2.0);
    r_max = std::max({r_max, r1, r2});
  }
  if (r_max <= 0.0) return 1;
  if (r_max >= 1.0) throw ConfigError("unstable filter");
  return static_cast<std::size_t>(std::ceil(std::log(1e-3) / std::log(r_max)));
}

std::vector<double> sos_filter(const Sos& sos, std::span<const double> x) {
  std::vector<double> y(x.begin(), x.end());
  if (y.empty()) return y;
  for (const auto& s : sos) {
    double z1, z2, ignored;
    steady_state(s, y[0], z1, z2, ignored);
    for (double& v : y) {
      const double in = v;
      const double out = s.b0 * in + z1;
      z1 = s.b1 * in - s.a1 * out + z2;
      z2 = s.b2 * in - s.a2 * out;
      v = out;
    }
  }
  return y;
}

std::vector<double> filtfilt(const Sos& sos, std::span<const double> x) {
  const std::size_t n = x.size();
  if (n == 0) return {};
  const std::size_t pad = 3 * settle_length(sos);
  std::vector<double> ext(n + 2 * pad);
  for (std::size_t i = 0; i < ext.size(); ++i)
    ext[i] = x[reflect_index(static_cast<long long>(i) - static_cast<long long>(pad), n)];

  auto fwd = sos_filter(sos, ext);
  std::reverse(fwd.begin(), fwd.end());
  auto back = sos_filter(sos, fwd);
  std::reverse(back.begin(), back.end());
  return std::vector<double>(back.begin() + static_cast<std::ptrdiff_t>(pad),
                             back.begin() + static_cast<std::ptrdiff_t>(pad + n));
}

std::vector<double> highpass_butterworth(std::span<const double> samples, double fs,
                                         const FilterSpec& spec) {
  check_band(spec.highpass_cutoff_hz, fs, "highpass cutoff");
  if (spec.highpass_order < 1) throw ConfigError("highpass order must be >= 1");
  if (samples.size() < 3 * static_cast<std::size_t>(spec.highpass_order))
    throw InputError("signal too short for highpass of order " +
                     std::to_string(spec.highpass_order));
  return filtfilt(butterworth_highpass(spec.highpass_order, spec.highpass_cutoff_hz, fs), samples);
}

std::vector<double> powerline_notch(std::span<const double> samples, double fs,
                                    const FilterSpec& spec) {
  return filtfilt(iir_notch(spec.powerline_freq_hz, spec.notch_quality, fs), samples);
}

EcgRecord clean(const EcgRecord& record, const FilterSpec& spec) {
  validate(spec, record.sampling_rate_hz);
  EcgRecord out = record;
  const auto hp = highpass_butterworth(record.samples, record.sampling_rate_hz, spec);
  out.samples = powerline_notch(hp, record.sampling_rate_hz, spec);
  return out;
}

std::vector<double> moving_average(std::span<const double> x, std::size_t width) {
  const std::size_t n = x.size();
  std::vector<double> out(n);
  if (n == 0) return out;
  const std::size_t half = std::max<std::size_t>(width, 1) / 2;
  std::vector<double> prefix(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + x[i];
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i >= half ? i - half : 0;
    const std::size_t hi = std::min(n, i + half + 1);
    out[i] = (prefix[hi] - prefix[lo]) / static_cast<double>(hi - lo);
  }
  return out;
}

}  // namespace ecgreid
