#pragma once

#include <numeric>
#include <vector>

#include "peep/audio.hpp"
#include "peep/fft.hpp"
#include "peep/mel.hpp"
#include "peep/scattering.hpp"

namespace peep {

enum class FeatureKind { Jtfs, Mfcc };

struct FeatureMatrix {
    Mat vectors;                     // [n_frames x dim]
    double frame_hop = 0.0;          // seconds
    std::vector<double> frame_times; // frame centers, seconds
    FeatureKind kind = FeatureKind::Jtfs;

    std::size_t frames() const { return vectors.rows; }
    std::size_t dim() const { return vectors.cols; }
};

/// Per-frame concatenation of the frequency-averaged scattering paths
/// (canonical (v_t, v_f, theta) order, flattened over the lambda axis) and,
/// optionally, the first-order column.
inline FeatureMatrix jtfs_feature_frames(const JtfsTensor& tensor, const S1Matrix& s1m,
                                         bool include_s1) {
    if (include_s1) {
        if (s1m.values.cols != tensor.n_frames ||
            std::abs(s1m.frame_hop - tensor.frame_hop) > 1e-12)
            throw ValidationError("jtfs features: first-order frames do not align with the tensor");
    }
    std::vector<std::size_t> order(tensor.paths.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const auto& pa = tensor.paths[a];
        const auto& pb = tensor.paths[b];
        return std::tie(pa.v_t, pa.v_f, pa.theta) < std::tie(pb.v_t, pb.v_f, pb.theta);
    });

    const std::size_t n_frames = tensor.n_frames;
    const std::size_t dim =
        tensor.paths.size() * tensor.n_lambda_avg + (include_s1 ? s1m.values.rows : 0);
    FeatureMatrix fm;
    fm.kind = FeatureKind::Jtfs;
    fm.frame_hop = tensor.frame_hop;
    fm.vectors = Mat(n_frames, dim);
    fm.frame_times.resize(n_frames);
    for (std::size_t k = 0; k < n_frames; ++k)
        fm.frame_times[k] = static_cast<double>(k) * tensor.frame_hop;

    for (std::size_t k = 0; k < n_frames; ++k) {
        double* row = fm.vectors.row(k);
        std::size_t d = 0;
        for (std::size_t pi : order)
            for (std::size_t l = 0; l < tensor.n_lambda_avg; ++l) row[d++] = tensor.at(pi, l, k);
        if (include_s1)
            for (std::size_t r = 0; r < s1m.values.rows; ++r) row[d++] = s1m.values.at(r, k);
    }
    return fm;
}

/// Mean and std over a centered window of `context` frames; windows shrink at
/// the edges instead of padding. Doubles the feature dimension.
inline FeatureMatrix context_stats(const FeatureMatrix& fm, int context = 5) {
    if (context < 1 || context % 2 == 0)
        throw ValidationError("context stats: window must be odd and positive");
    const int half = context / 2;
    const auto n = static_cast<std::ptrdiff_t>(fm.frames());
    FeatureMatrix out;
    out.kind = fm.kind;
    out.frame_hop = fm.frame_hop;
    out.frame_times = fm.frame_times;
    out.vectors = Mat(fm.frames(), 2 * fm.dim());

    for (std::ptrdiff_t k = 0; k < n; ++k) {
        const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, k - half);
        const std::ptrdiff_t hi = std::min(n - 1, k + half);
        const double cnt = static_cast<double>(hi - lo + 1);
        double* row = out.vectors.row(static_cast<std::size_t>(k));
        for (std::size_t d = 0; d < fm.dim(); ++d) {
            double m = 0.0;
            for (std::ptrdiff_t f = lo; f <= hi; ++f) m += fm.vectors.at(static_cast<std::size_t>(f), d);
            m /= cnt;
            double var = 0.0;
            for (std::ptrdiff_t f = lo; f <= hi; ++f) {
                const double v = fm.vectors.at(static_cast<std::size_t>(f), d) - m;
                var += v * v;
            }
            row[d] = m;
            row[fm.dim() + d] = std::sqrt(var / cnt);
        }
    }
    return out;
}

struct MfccParams {
    double frame = 0.025;  // s
    double hop = 0.010;    // s
    int n_coeffs = 24;
    int n_mels = 40;
    double log_floor = 1e-10;
};

/// Log-mel spectrogram followed by an orthonormal DCT-II, coefficients 0..n-1.
inline FeatureMatrix mfcc(const AudioClip& x, const MfccParams& p = {}) {
    const auto win = static_cast<std::size_t>(std::lround(p.frame * x.sample_rate));
    const auto hop = static_cast<std::size_t>(std::lround(p.hop * x.sample_rate));
    if (win == 0 || hop == 0) throw ValidationError("mfcc: frame and hop must be positive");
    if (x.samples.size() < win) throw ValidationError("mfcc: clip shorter than one frame");
    const std::size_t n_fft = next_pow2(win);
    const std::size_t n_frames = 1 + (x.samples.size() - win) / hop;

    const auto filters =
        detail::mel_filters(p.n_mels, 0.0, x.sample_rate / 2.0, x.sample_rate, n_fft);
    std::vector<double> hann(win);
    for (std::size_t i = 0; i < win; ++i)
        hann[i] = 0.5 - 0.5 * std::cos(kTwoPi * static_cast<double>(i) / static_cast<double>(win));

    // orthonormal DCT-II basis [n_coeffs x n_mels]
    Mat dct(static_cast<std::size_t>(p.n_coeffs), static_cast<std::size_t>(p.n_mels));
    for (int k = 0; k < p.n_coeffs; ++k) {
        const double w = k == 0 ? std::sqrt(1.0 / p.n_mels) : std::sqrt(2.0 / p.n_mels);
        for (int m = 0; m < p.n_mels; ++m)
            dct.at(static_cast<std::size_t>(k), static_cast<std::size_t>(m)) =
                w * std::cos(kPi * (2.0 * m + 1.0) * k / (2.0 * p.n_mels));
    }

    FeatureMatrix fm;
    fm.kind = FeatureKind::Mfcc;
    fm.frame_hop = static_cast<double>(hop) / x.sample_rate;
    fm.vectors = Mat(n_frames, static_cast<std::size_t>(p.n_coeffs));
    fm.frame_times.resize(n_frames);

    std::vector<cplx> buf(n_fft);
    std::vector<double> mel(static_cast<std::size_t>(p.n_mels));
    for (std::size_t f = 0; f < n_frames; ++f) {
        const std::size_t start = f * hop;
        fm.frame_times[f] = (static_cast<double>(start) + win / 2.0) / x.sample_rate;
        // per-frame DC offset removal, then Hann
        double offset = 0.0;
        for (std::size_t i = 0; i < win; ++i) offset += x.samples[start + i];
        offset /= static_cast<double>(win);
        std::fill(buf.begin(), buf.end(), cplx{0.0, 0.0});
        for (std::size_t i = 0; i < win; ++i)
            buf[i] = cplx((x.samples[start + i] - offset) * hann[i], 0.0);
        Fft::plan(n_fft).forward(buf);
        for (std::size_t b = 0; b < filters.size(); ++b) {
            const auto& [k0, w] = filters[b];
            double acc = 0.0;
            for (std::size_t i = 0; i < w.size(); ++i) acc += std::abs(buf[k0 + i]) * w[i];
            mel[b] = std::log(std::max(acc, p.log_floor));
        }
        double* row = fm.vectors.row(f);
        for (int k = 0; k < p.n_coeffs; ++k) {
            double acc = 0.0;
            for (int m = 0; m < p.n_mels; ++m)
                acc += dct.at(static_cast<std::size_t>(k), static_cast<std::size_t>(m)) *
                       mel[static_cast<std::size_t>(m)];
            row[k] = acc;
        }
    }
    return fm;
}

struct NormStats {
    std::vector<double> mean;
    std::vector<double> std;
    std::vector<std::uint8_t> degenerate;  // flagged zero-variance dims

    bool any_degenerate() const {
        for (auto d : degenerate)
            if (d) return true;
        return false;
    }
};

/// Per-dimension mean/std over the given training matrices (population std,
/// floored at 1e-8 with a flag for degenerate dimensions).
inline NormStats zscore_fit(const std::vector<const FeatureMatrix*>& train) {
    std::size_t dim = 0, total = 0;
    for (const auto* fm : train) {
        if (dim == 0) dim = fm->dim();
        if (fm->dim() != dim) throw ValidationError("zscore: inconsistent feature dimensions");
        total += fm->frames();
    }
    if (total == 0) throw ValidationError("zscore: no training frames");

    NormStats st;
    st.mean.assign(dim, 0.0);
    st.std.assign(dim, 0.0);
    st.degenerate.assign(dim, 0);
    for (const auto* fm : train)
        for (std::size_t f = 0; f < fm->frames(); ++f) {
            const double* row = fm->vectors.row(f);
            for (std::size_t d = 0; d < dim; ++d) st.mean[d] += row[d];
        }
    for (auto& m : st.mean) m /= static_cast<double>(total);
    for (const auto* fm : train)
        for (std::size_t f = 0; f < fm->frames(); ++f) {
            const double* row = fm->vectors.row(f);
            for (std::size_t d = 0; d < dim; ++d) {
                const double v = row[d] - st.mean[d];
                st.std[d] += v * v;
            }
        }
    for (std::size_t d = 0; d < dim; ++d) {
        st.std[d] = std::sqrt(st.std[d] / static_cast<double>(total));
        if (!(st.std[d] > 1e-8)) {
            st.std[d] = 1e-8;
            st.degenerate[d] = 1;
        }
        if (!std::isfinite(st.mean[d]) || !std::isfinite(st.std[d]))
            throw ValidationError("zscore: non-finite feature statistics");
    }
    return st;
}

inline NormStats zscore_fit(const FeatureMatrix& train) { return zscore_fit({&train}); }

inline FeatureMatrix zscore_apply(const FeatureMatrix& fm, const NormStats& st) {
    if (fm.dim() != st.mean.size()) throw ValidationError("zscore: dimension mismatch");
    FeatureMatrix out = fm;
    for (std::size_t f = 0; f < out.frames(); ++f) {
        double* row = out.vectors.row(f);
        for (std::size_t d = 0; d < out.dim(); ++d) row[d] = (row[d] - st.mean[d]) / st.std[d];
    }
    return out;
}

}  // namespace peep
