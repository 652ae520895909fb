#pragma once

#include <cmath>
#include <vector>

#include "peep/common.hpp"

namespace peep {

// Constant-Q analytic wavelet filterbanks, materialized in the frequency
// domain at a fixed FFT size. Convolution downstream is multiply-in-frequency.
//
// Conventions used throughout the transform code:
//   * frequencies are in cycles/sample of whichever axis the bank lives on
//     (audio samples for temporal banks, log-frequency bins for spectral ones);
//   * a frequency response is real and non-negative (Morlet with a DC
//     correction term), stored as a sparse window [first_bin, first_bin+len)
//     that may wrap around the FFT buffer;
//   * temporal wavelets are analytic: bins above Nyquist stay exactly zero.

inline constexpr double kNuMax = 0.35;  // top center frequency, cycles/sample

/// Gaussian std giving a -3 dB crossing between adjacent constant-Q filters.
inline double morlet_sigma(double center, int q) {
    return center * (std::exp2(0.5 / q) - 1.0) / std::sqrt(std::log(2.0));
}

struct WaveletFilter {
    double center_frequency = 0.0;  // signed; negative for flipped spectral wavelets
    double bandwidth = 0.0;         // Gaussian std, cycles/sample
    int log_freq_index = 0;         // 0 = highest |center|, increasing downward
    std::size_t n_fft = 0;
    std::size_t first_bin = 0;      // start of the stored window (may wrap)
    std::vector<double> window;

    double value_at(std::size_t bin) const {
        const std::size_t off = (bin + n_fft - (first_bin % n_fft)) % n_fft;
        return off < window.size() ? window[off] : 0.0;
    }

    std::vector<double> dense() const {
        std::vector<double> out(n_fft, 0.0);
        for (std::size_t t = 0; t < window.size(); ++t)
            out[(first_bin + t) % n_fft] += window[t];
        return out;
    }

    void scale(double c) {
        for (auto& w : window) w *= c;
    }
};

struct Filterbank {
    std::vector<WaveletFilter> filters;  // ascending center frequency
    WaveletFilter lowpass;               // centered at 0, DC gain 1
    int filters_per_octave = 0;
    int octaves = 0;
    std::size_t n_fft = 0;
    bool spectral = false;  // oriented bank over the log-frequency axis
};

namespace detail {

inline double signed_freq(std::size_t bin, std::size_t n) {
    const double k = static_cast<double>(bin);
    const double nn = static_cast<double>(n);
    return bin <= n / 2 ? k / nn : (k - nn) / nn;
}

/// Morlet magnitude response over [lo_bin, hi_bin], unit peak.
inline WaveletFilter make_morlet(double cf, double sigma, std::size_t n_fft, int index,
                                 bool analytic) {
    WaveletFilter f;
    f.center_frequency = cf;
    f.bandwidth = sigma;
    f.log_freq_index = index;
    f.n_fft = n_fft;

    const double acf = std::abs(cf);
    const double beta = std::exp(-acf * acf / (2.0 * sigma * sigma));  // DC correction
    const double reach = 9.5 * sigma;
    double lo = acf - reach;
    if (beta >= 1e-30) lo = 0.0;  // correction term extends support to DC
    lo = std::max(lo, 0.0);
    double hi = std::min(acf + reach, 0.5);

    auto lo_bin = static_cast<std::size_t>(std::ceil(lo * static_cast<double>(n_fft)));
    auto hi_bin = static_cast<std::size_t>(std::floor(hi * static_cast<double>(n_fft)));
    hi_bin = std::min(hi_bin, n_fft / 2);
    if (hi_bin < lo_bin) hi_bin = lo_bin;

    f.first_bin = lo_bin;
    f.window.resize(hi_bin - lo_bin + 1);
    double peak = 0.0;
    for (std::size_t b = lo_bin; b <= hi_bin; ++b) {
        const double w = static_cast<double>(b) / static_cast<double>(n_fft);
        const double main = std::exp(-(w - acf) * (w - acf) / (2.0 * sigma * sigma));
        const double corr = beta * std::exp(-w * w / (2.0 * sigma * sigma));
        f.window[b - lo_bin] = std::max(main - corr, 0.0);
        peak = std::max(peak, f.window[b - lo_bin]);
    }
    if (peak > 0.0)
        for (auto& w : f.window) w /= peak;

    if (cf < 0.0) {
        // mirror onto negative frequencies: resp(k) = resp_pos(n - k)
        std::vector<double> rev(f.window.rbegin(), f.window.rend());
        f.window = std::move(rev);
        f.first_bin = (n_fft - hi_bin) % n_fft;
    }
    (void)analytic;
    return f;
}

/// Symmetric Gaussian lowpass (DC gain exactly 1), stored with wraparound.
inline WaveletFilter make_gaussian_lowpass(double sigma, std::size_t n_fft, int index = -1) {
    WaveletFilter f;
    f.center_frequency = 0.0;
    f.bandwidth = sigma;
    f.log_freq_index = index;
    f.n_fft = n_fft;
    auto m = static_cast<std::size_t>(std::ceil(9.5 * sigma * static_cast<double>(n_fft)));
    m = std::min(m, n_fft / 2);
    f.first_bin = m == 0 ? 0 : (n_fft - m) % n_fft;
    f.window.resize(2 * m + 1);
    for (std::size_t t = 0; t < f.window.size(); ++t) {
        const std::size_t bin = (f.first_bin + t) % n_fft;
        const double w = signed_freq(bin, n_fft);
        f.window[t] = std::exp(-w * w / (2.0 * sigma * sigma));
    }
    return f;
}

/// Rescales wavelets so max_k( sum |psi|^2 + |phi|^2 ) == 1. The lowpass is
/// left untouched (its DC gain is part of the averaging contract).
inline void normalize_frame_bound(Filterbank& fb) {
    std::vector<double> wave_sum(fb.n_fft, 0.0);
    for (const auto& f : fb.filters)
        for (std::size_t t = 0; t < f.window.size(); ++t) {
            const std::size_t bin = (f.first_bin + t) % fb.n_fft;
            wave_sum[bin] += f.window[t] * f.window[t];
        }
    std::vector<double> low_sum(fb.n_fft, 0.0);
    for (std::size_t t = 0; t < fb.lowpass.window.size(); ++t) {
        const std::size_t bin = (fb.lowpass.first_bin + t) % fb.n_fft;
        low_sum[bin] += fb.lowpass.window[t] * fb.lowpass.window[t];
    }
    double c2 = 1.0;
    for (std::size_t k = 0; k < fb.n_fft; ++k) {
        if (wave_sum[k] < 1e-12) continue;
        c2 = std::min(c2, std::max(0.0, 1.0 - low_sum[k]) / wave_sum[k]);
    }
    const double c = std::sqrt(c2);
    for (auto& f : fb.filters) f.scale(c);
}

}  // namespace detail

/// Littlewood-Paley sum (wavelets squared plus lowpass squared) per FFT bin.
inline std::vector<double> littlewood_paley(const Filterbank& fb) {
    std::vector<double> sum(fb.n_fft, 0.0);
    for (const auto& f : fb.filters)
        for (std::size_t t = 0; t < f.window.size(); ++t) {
            const std::size_t bin = (f.first_bin + t) % fb.n_fft;
            sum[bin] += f.window[t] * f.window[t];
        }
    for (std::size_t t = 0; t < fb.lowpass.window.size(); ++t) {
        const std::size_t bin = (fb.lowpass.first_bin + t) % fb.n_fft;
        sum[bin] += fb.lowpass.window[t] * fb.lowpass.window[t];
    }
    return sum;
}

/// q*j analytic Morlet wavelets spanning [nu_max * 2^-j, nu_max], plus a
/// Gaussian lowpass matched to the lowest band. Filters are stored by
/// ascending center frequency; log_freq_index runs the other way (0 = top).
inline Filterbank build_temporal_filterbank(int q, int j, std::size_t n_fft) {
    if (q < 1 || j < 1) throw ValidationError("filterbank: Q and J must be >= 1");
    if (!is_pow2(n_fft)) throw ValidationError("filterbank: n_fft must be a power of two");

    const int count = q * j;
    const double cf_min = kNuMax * std::exp2(-static_cast<double>(count - 1) / q);
    const double sigma_min = morlet_sigma(cf_min, q);
    if (sigma_min * static_cast<double>(n_fft) < 1.3)
        throw ValidationError("filterbank: octave count too large for fft size (lowest wavelet "
                              "wider than the analysis window)");

    Filterbank fb;
    fb.filters_per_octave = q;
    fb.octaves = j;
    fb.n_fft = n_fft;
    fb.filters.reserve(static_cast<std::size_t>(count));
    for (int s = 0; s < count; ++s) {
        const int idx = count - 1 - s;  // 0 = highest frequency
        const double cf = kNuMax * std::exp2(-static_cast<double>(idx) / q);
        fb.filters.push_back(detail::make_morlet(cf, morlet_sigma(cf, q), n_fft, idx, true));
    }
    fb.lowpass = detail::make_gaussian_lowpass(sigma_min, n_fft);
    detail::normalize_frame_bound(fb);
    return fb;
}

/// Oriented bank over the log-frequency axis: for every scale a filter at
/// +2^-v and its frequency-reversed twin at -2^-v, plus a symmetric lowpass.
/// Filters are stored as (plus, minus) pairs by ascending |center|.
inline Filterbank build_spectral_filterbank(int q, int j_fr, std::size_t n_bins) {
    if (q < 1 || j_fr < 1) throw ValidationError("filterbank: Q and J must be >= 1");
    if (!is_pow2(n_bins)) throw ValidationError("filterbank: n_bins must be a power of two");

    const int count = q * j_fr;
    const double cf_min = kNuMax * std::exp2(-static_cast<double>(count - 1) / q);
    const double sigma_min = morlet_sigma(cf_min, q);
    if (sigma_min * static_cast<double>(n_bins) < 1.3)
        throw ValidationError("filterbank: octave count too large for the log-frequency axis");

    Filterbank fb;
    fb.filters_per_octave = q;
    fb.octaves = j_fr;
    fb.n_fft = n_bins;
    fb.spectral = true;
    for (int s = 0; s < count; ++s) {
        const int idx = count - 1 - s;
        const double cf = kNuMax * std::exp2(-static_cast<double>(idx) / q);
        const double sig = morlet_sigma(cf, q);
        fb.filters.push_back(detail::make_morlet(cf, sig, n_bins, idx, false));
        fb.filters.push_back(detail::make_morlet(-cf, sig, n_bins, idx, false));
    }
    fb.lowpass = detail::make_gaussian_lowpass(sigma_min, n_bins);
    detail::normalize_frame_bound(fb);
    return fb;
}

/// Padded size for the log-frequency axis: row count plus one-sided support
/// of the widest spectral wavelet plus the averaging kernel margin.
inline std::size_t spectral_fft_size(int q, int j_fr, std::size_t n_rows,
                                     std::size_t extra_margin = 0) {
    const int count = q * j_fr;
    const double cf_min = kNuMax * std::exp2(-static_cast<double>(count - 1) / q);
    const double sigma_min = morlet_sigma(cf_min, q);
    const auto support = static_cast<std::size_t>(std::ceil(0.7 / sigma_min));
    return next_pow2(n_rows + support + extra_margin);
}

/// Separable Gaussian averaging kernel Phi(t, lambda) = phi_T(t) * phi_F(lambda).
/// T is in samples of the time axis, F in bins of the log-frequency axis; the
/// -3 dB point of each factor sits at 1/scale and the DC gain is exactly 1.
struct LowpassSpec {
    int t = 1 << 14;  // samples
    int f = 32;       // log-frequency bins

    void validate() const {
        if (t <= 0 || !is_pow2(static_cast<std::size_t>(t)))
            throw ValidationError("lowpass: T must be a positive power of two");
        if (f <= 0 || !is_pow2(static_cast<std::size_t>(f)))
            throw ValidationError("lowpass: F must be a positive power of two");
    }
};

struct SeparableLowpass {
    LowpassSpec spec;

    static double sigma_for_scale(double scale) { return 1.0 / (scale * std::sqrt(std::log(2.0))); }

    /// Frequency response over n bins (two-sided), for an axis whose samples
    /// are `step` native units apart.
    static std::vector<double> response(std::size_t n, double scale, double step) {
        const double sigma = sigma_for_scale(scale) * step;
        std::vector<double> out(n);
        for (std::size_t k = 0; k < n; ++k) {
            const double w = detail::signed_freq(k, n);
            out[k] = std::exp(-w * w / (2.0 * sigma * sigma));
        }
        return out;
    }

    std::vector<double> time_response(std::size_t n, double step_samples) const {
        return response(n, static_cast<double>(spec.t), step_samples);
    }

    std::vector<double> freq_axis_response(std::size_t n) const {
        return response(n, static_cast<double>(spec.f), 1.0);
    }

    /// Spatial-domain taps of one Gaussian factor, normalized to unit sum.
    static std::vector<double> spatial_kernel(double scale, int& half_width) {
        const double sigma_t = scale * std::sqrt(std::log(2.0)) / kTwoPi;
        half_width = std::max(1, static_cast<int>(std::ceil(4.5 * sigma_t)));
        std::vector<double> taps(static_cast<std::size_t>(2 * half_width + 1));
        double sum = 0.0;
        for (int d = -half_width; d <= half_width; ++d) {
            const double v = std::exp(-0.5 * (d / sigma_t) * (d / sigma_t));
            taps[static_cast<std::size_t>(d + half_width)] = v;
            sum += v;
        }
        for (auto& t : taps) t /= sum;
        return taps;
    }
};

inline SeparableLowpass build_lowpass_2d(const LowpassSpec& spec) {
    spec.validate();
    return SeparableLowpass{spec};
}

/// Long-format dump `filter,bin,magnitude` for plotting/debug.
inline std::string filterbank_to_csv(const Filterbank& fb) {
    std::ostringstream out;
    out << "filter,bin,magnitude\n";
    out.precision(9);
    for (std::size_t i = 0; i < fb.filters.size(); ++i) {
        const auto& f = fb.filters[i];
        for (std::size_t t = 0; t < f.window.size(); ++t)
            out << i << ',' << (f.first_bin + t) % fb.n_fft << ',' << f.window[t] << '\n';
    }
    return out.str();
}

}  // namespace peep
