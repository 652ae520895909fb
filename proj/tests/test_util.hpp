#pragma once

// Shared helpers for the test suites. Everything here is an independent
// oracle: brute-force or textbook implementations kept deliberately separate
// from the library's own transform paths.

#include <algorithm>
#include <complex>
#include <functional>
#include <numeric>
#include <vector>

#include "peep/common.hpp"

namespace testutil {

/// Textbook DFT, O(n^2). Slow but unimpeachable.
inline std::vector<std::complex<double>> dft(const std::vector<double>& x) {
    const std::size_t n = x.size();
    std::vector<std::complex<double>> out(n);
    for (std::size_t k = 0; k < n; ++k) {
        std::complex<double> acc{0.0, 0.0};
        for (std::size_t t = 0; t < n; ++t) {
            const double a = -peep::kTwoPi * static_cast<double>(k) * static_cast<double>(t) /
                             static_cast<double>(n);
            acc += x[t] * std::complex<double>(std::cos(a), std::sin(a));
        }
        out[k] = acc;
    }
    return out;
}

/// Magnitude STFT with a Hann window; frame f covers [f*hop, f*hop+win).
inline std::vector<std::vector<double>> stft_mag(const std::vector<double>& x, std::size_t win,
                                                 std::size_t hop, std::size_t n_fft) {
    std::vector<std::vector<double>> frames;
    if (x.size() < win) return frames;
    std::vector<double> hann(win);
    for (std::size_t i = 0; i < win; ++i)
        hann[i] = 0.5 - 0.5 * std::cos(peep::kTwoPi * static_cast<double>(i) / static_cast<double>(win));
    for (std::size_t start = 0; start + win <= x.size(); start += hop) {
        std::vector<double> seg(n_fft, 0.0);
        for (std::size_t i = 0; i < win; ++i) seg[i] = x[start + i] * hann[i];
        auto spec = dft(seg);
        std::vector<double> mag(n_fft / 2 + 1);
        for (std::size_t k = 0; k <= n_fft / 2; ++k) mag[k] = std::abs(spec[k]);
        frames.push_back(std::move(mag));
    }
    return frames;
}

inline double spectral_centroid_hz(const std::vector<double>& mag, int sample_rate,
                                   std::size_t n_fft) {
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < mag.size(); ++k) {
        const double f = static_cast<double>(k) * sample_rate / static_cast<double>(n_fft);
        num += f * mag[k];
        den += mag[k];
    }
    return den > 0.0 ? num / den : 0.0;
}

/// Maximum bipartite matching size by exhaustive augmenting search.
/// adj[i] lists the right-side nodes reachable from left node i.
inline int brute_force_matching(const std::vector<std::vector<int>>& adj, int n_right) {
    const int n_left = static_cast<int>(adj.size());
    std::vector<int> match_right(static_cast<std::size_t>(n_right), -1);
    std::vector<char> used;
    std::function<bool(int)> try_kuhn = [&](int u) -> bool {
        for (int v : adj[static_cast<std::size_t>(u)]) {
            if (used[static_cast<std::size_t>(v)]) continue;
            used[static_cast<std::size_t>(v)] = 1;
            if (match_right[static_cast<std::size_t>(v)] < 0 ||
                try_kuhn(match_right[static_cast<std::size_t>(v)])) {
                match_right[static_cast<std::size_t>(v)] = u;
                return true;
            }
        }
        return false;
    };
    // run over all permutations of left nodes and keep the best, so the
    // result cannot depend on augmenting order (it never does for Kuhn's,
    // but the point of this oracle is to assume nothing)
    std::vector<int> order(static_cast<std::size_t>(n_left));
    std::iota(order.begin(), order.end(), 0);
    int best = 0;
    int tries = 0;
    do {
        std::fill(match_right.begin(), match_right.end(), -1);
        int size = 0;
        for (int u : order) {
            used.assign(static_cast<std::size_t>(n_right), 0);
            if (try_kuhn(u)) ++size;
        }
        best = std::max(best, size);
        ++tries;
    } while (std::next_permutation(order.begin(), order.end()) && tries < 5040);
    return best;
}

inline double mean(const std::vector<double>& v) {
    return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline double population_std(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    const double m = mean(v);
    double acc = 0.0;
    for (double x : v) acc += (x - m) * (x - m);
    return std::sqrt(acc / static_cast<double>(v.size()));
}

inline double rel_l2_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += (a[i] - b[i]) * (a[i] - b[i]);
        den += a[i] * a[i];
    }
    return den > 0.0 ? std::sqrt(num / den) : 0.0;
}

}  // namespace testutil
