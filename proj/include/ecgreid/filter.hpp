#pragma once

#include <span>
#include <vector>

#include "ecgreid/record.hpp"

namespace ecgreid {

struct FilterSpec {
  double highpass_cutoff_hz = 0.5;
  int highpass_order = 5;
  double powerline_freq_hz = 50.0;
  double notch_quality = 30.0;
};

/// Throws ConfigError if a frequency is at or above Nyquist or a field is non-positive.
void validate(const FilterSpec& spec, double fs);

/// Second-order section, normalised so a0 == 1:
/// H(z) = (b0 + b1 z^-1 + b2 z^-2) / (1 + a1 z^-1 + a2 z^-2).
/// First-order sections use b2 == a2 == 0.
struct Biquad {
  double b0 = 1.0, b1 = 0.0, b2 = 0.0;
  double a1 = 0.0, a2 = 0.0;
};

using Sos = std::vector<Biquad>;

/// Bilinear-transform Butterworth designs with frequency prewarping.
Sos butterworth_highpass(int order, double cutoff_hz, double fs);
Sos butterworth_lowpass(int order, double cutoff_hz, double fs);
/// Second-order IIR notch with bandwidth f0 / quality.
Sos iir_notch(double freq_hz, double quality, double fs);

/// |H(e^{jw})| of the cascade at `freq_hz`.
double magnitude_response(const Sos& sos, double freq_hz, double fs);

/// Samples until the slowest pole decays to 1e-3.
std::size_t settle_length(const Sos& sos);

/// Single forward pass, starting from the steady state of `x[0]`.
std::vector<double> sos_filter(const Sos& sos, std::span<const double> x);

/// Forward-backward filtering with even-reflection padding of `3 * settle_length`.
/// The effective magnitude response is |H|^2 with zero phase.
std::vector<double> filtfilt(const Sos& sos, std::span<const double> x);

std::vector<double> highpass_butterworth(std::span<const double> samples, double fs,
                                         const FilterSpec& spec);
std::vector<double> powerline_notch(std::span<const double> samples, double fs,
                                    const FilterSpec& spec);

/// Highpass then notch; metadata is copied unchanged.
EcgRecord clean(const EcgRecord& record, const FilterSpec& spec = {});

/// Centred moving average with window `width` samples (forced odd), edges shrink.
std::vector<double> moving_average(std::span<const double> x, std::size_t width);

}  // namespace ecgreid
