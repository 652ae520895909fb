#pragma once

#include <utility>
#include <vector>

#include "peep/common.hpp"

namespace peep::detail {

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

/// Triangular mel filters as (first_bin, weights) pairs, unit peak.
inline std::vector<std::pair<std::size_t, std::vector<double>>> mel_filters(
    int n_bands, double fmin, double fmax, int sample_rate, std::size_t n_fft) {
    const double mel_lo = hz_to_mel(fmin);
    const double mel_hi = hz_to_mel(std::min(fmax, sample_rate / 2.0));
    std::vector<double> edges(static_cast<std::size_t>(n_bands) + 2);
    for (std::size_t i = 0; i < edges.size(); ++i)
        edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) /
                                          static_cast<double>(n_bands + 1));
    std::vector<std::pair<std::size_t, std::vector<double>>> filters;
    const double bin_hz = static_cast<double>(sample_rate) / static_cast<double>(n_fft);
    for (int b = 0; b < n_bands; ++b) {
        const double lo = edges[static_cast<std::size_t>(b)];
        const double mid = edges[static_cast<std::size_t>(b) + 1];
        const double hi = edges[static_cast<std::size_t>(b) + 2];
        const auto k0 = static_cast<std::size_t>(std::ceil(lo / bin_hz));
        const auto k1 = std::min(static_cast<std::size_t>(std::floor(hi / bin_hz)), n_fft / 2);
        std::vector<double> w;
        for (std::size_t k = k0; k <= k1; ++k) {
            const double f = static_cast<double>(k) * bin_hz;
            double v = 0.0;
            if (f >= lo && f <= mid && mid > lo)
                v = (f - lo) / (mid - lo);
            else if (f > mid && f <= hi && hi > mid)
                v = (hi - f) / (hi - mid);
            w.push_back(std::max(0.0, v));
        }
        filters.emplace_back(k0, std::move(w));
    }
    return filters;
}

}  // namespace peep::detail
