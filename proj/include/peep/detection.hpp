#pragma once

#include <vector>

#include "peep/audio.hpp"
#include "peep/fft.hpp"
#include "peep/mel.hpp"

namespace peep {

// Onset detection and call segmentation. The onset function is a spectral
// flux over log band energies with a maximum filter along the frequency axis
// applied to the reference frame, which keeps vibrato-style frequency
// modulation from registering as onsets.

struct OnsetEnvelope {
    std::vector<double> values;  // onset strength per frame, >= 0
    double frame_hop = 0.0;      // seconds
    double t0 = 0.0;             // time of frame 0 (window center), seconds
};

struct Segment {
    double start = 0.0;
    double end = 0.0;
};

struct SuperfluxParams {
    int n_fft = 2048;
    int hop = 441;
    int n_bands = 138;
    double fmin = 27.5;
    double fmax = 16000.0;
    int max_width = 3;  // maximum-filter width along frequency, odd
    int lag = 1;        // frames between the current and the reference spectrum
};



/// Per-band log-magnitude spectrogram on a mel-spaced axis.
/// Rows are frames, columns bands; frame f covers [f*hop, f*hop + n_fft).
inline Mat superflux_bands(const AudioClip& x, const SuperfluxParams& p) {
    if (p.hop >= p.n_fft) throw ValidationError("superflux: hop must be below n_fft");
    if (p.max_width < 1 || p.max_width % 2 == 0)
        throw ValidationError("superflux: max_width must be odd and >= 1");
    if (x.samples.size() < static_cast<std::size_t>(p.n_fft))
        throw ValidationError("superflux: clip shorter than one analysis window");

    const auto n_fft = static_cast<std::size_t>(p.n_fft);
    const std::size_t fft_size = next_pow2(n_fft);
    const std::size_t n_frames = 1 + (x.samples.size() - n_fft) / static_cast<std::size_t>(p.hop);
    const auto filters = detail::mel_filters(p.n_bands, p.fmin, p.fmax, x.sample_rate, fft_size);

    std::vector<double> hann(n_fft);
    for (std::size_t i = 0; i < n_fft; ++i)
        hann[i] = 0.5 - 0.5 * std::cos(kTwoPi * static_cast<double>(i) / static_cast<double>(n_fft));

    Mat bands(n_frames, static_cast<std::size_t>(p.n_bands));
    std::vector<cplx> buf(fft_size);
    std::vector<double> mag(fft_size / 2 + 1);
    for (std::size_t f = 0; f < n_frames; ++f) {
        const std::size_t start = f * static_cast<std::size_t>(p.hop);
        std::fill(buf.begin(), buf.end(), cplx{0.0, 0.0});
        for (std::size_t i = 0; i < n_fft; ++i)
            buf[i] = cplx(x.samples[start + i] * hann[i], 0.0);
        Fft::plan(fft_size).forward(buf);
        for (std::size_t k = 0; k <= fft_size / 2; ++k) mag[k] = std::abs(buf[k]);
        for (std::size_t b = 0; b < filters.size(); ++b) {
            const auto& [k0, w] = filters[b];
            double acc = 0.0;
            for (std::size_t i = 0; i < w.size(); ++i) acc += mag[k0 + i] * w[i];
            bands.at(f, b) = std::log1p(acc);
        }
    }
    return bands;
}

/// Positive spectral differences against the maximum-filtered reference frame,
/// summed over bands.
inline OnsetEnvelope superflux_envelope(const AudioClip& x, const SuperfluxParams& p = {}) {
    const Mat bands = superflux_bands(x, p);
    const std::size_t n_frames = bands.rows;
    const auto n_bands = bands.cols;
    const int half = (p.max_width - 1) / 2;

    OnsetEnvelope env;
    env.values.assign(n_frames, 0.0);
    env.frame_hop = static_cast<double>(p.hop) / x.sample_rate;
    env.t0 = static_cast<double>(p.n_fft) / 2.0 / x.sample_rate;

    const auto lag = static_cast<std::size_t>(p.lag);
    for (std::size_t f = lag; f < n_frames; ++f) {
        const double* cur = bands.row(f);
        const double* ref = bands.row(f - lag);
        double acc = 0.0;
        for (std::size_t b = 0; b < n_bands; ++b) {
            double ref_max = ref[b];
            for (int d = -half; d <= half; ++d) {
                const auto bb = static_cast<std::ptrdiff_t>(b) + d;
                if (bb < 0 || bb >= static_cast<std::ptrdiff_t>(n_bands)) continue;
                ref_max = std::max(ref_max, ref[bb]);
            }
            acc += std::max(0.0, cur[b] - ref_max);
        }
        env.values[f] = acc;
    }
    return env;
}

struct PeakPickParams {
    double pre_max = 0.03;   // s
    double post_max = 0.03;  // s
    double pre_avg = 0.10;   // s
    double post_avg = 0.10;  // s
    double delta = 1.0;      // required excess over the local mean
    double wait = 0.03;      // s between reported onsets
};

/// A frame is an onset iff it is the maximum of its max-window, exceeds the
/// mean of its avg-window by delta, and enough time passed since the last one.
inline std::vector<double> pick_peaks(const OnsetEnvelope& env, const PeakPickParams& p = {}) {
    if (p.pre_max < 0 || p.post_max < 0 || p.pre_avg < 0 || p.post_avg < 0 || p.wait < 0)
        throw ValidationError("peak picking: windows must be non-negative");
    const auto n = static_cast<std::ptrdiff_t>(env.values.size());
    auto frames = [&](double s) { return static_cast<std::ptrdiff_t>(std::lround(s / env.frame_hop)); };
    const std::ptrdiff_t pre_max = frames(p.pre_max), post_max = frames(p.post_max);
    const std::ptrdiff_t pre_avg = frames(p.pre_avg), post_avg = frames(p.post_avg);
    const std::ptrdiff_t wait = frames(p.wait);

    std::vector<double> onsets;
    std::ptrdiff_t last = std::numeric_limits<std::ptrdiff_t>::min() / 2;
    for (std::ptrdiff_t f = 0; f < n; ++f) {
        const double v = env.values[static_cast<std::size_t>(f)];
        double wmax = -1.0;
        for (std::ptrdiff_t k = std::max<std::ptrdiff_t>(0, f - pre_max);
             k <= std::min(n - 1, f + post_max); ++k)
            wmax = std::max(wmax, env.values[static_cast<std::size_t>(k)]);
        if (v < wmax) continue;
        double acc = 0.0;
        std::ptrdiff_t cnt = 0;
        for (std::ptrdiff_t k = std::max<std::ptrdiff_t>(0, f - pre_avg);
             k <= std::min(n - 1, f + post_avg); ++k, ++cnt)
            acc += env.values[static_cast<std::size_t>(k)];
        if (cnt == 0 || v < acc / static_cast<double>(cnt) + p.delta) continue;
        if (f - last < wait) continue;
        last = f;
        onsets.push_back(env.t0 + static_cast<double>(f) * env.frame_hop);
    }
    return onsets;
}

struct SegmentParams {
    double threshold_db = -30.0;  // relative to the interval's peak RMS
    double rms_window = 0.025;    // s
    double rms_hop = 0.010;       // s
};

/// Within each inter-onset interval, frames whose short-time RMS stays within
/// threshold_db of the interval's peak form the call; the segment starts at
/// the onset and ends with the last such frame. Zero-energy intervals yield
/// nothing.
inline std::vector<Segment> segment_calls(const AudioClip& x, const std::vector<double>& onsets,
                                          const SegmentParams& p = {}) {
    std::vector<Segment> out;
    if (onsets.empty()) return out;
    if (!std::is_sorted(onsets.begin(), onsets.end()))
        throw ValidationError("segment_calls: onsets must be sorted");

    const auto win = static_cast<std::size_t>(std::lround(p.rms_window * x.sample_rate));
    const auto hop = static_cast<std::size_t>(std::lround(p.rms_hop * x.sample_rate));
    if (win == 0 || hop == 0) throw ValidationError("segment_calls: window too small");
    const std::size_t n_frames = x.samples.size() > win ? 1 + (x.samples.size() - win) / hop : 0;

    std::vector<double> frame_rms(n_frames), frame_center(n_frames);
    for (std::size_t f = 0; f < n_frames; ++f) {
        frame_rms[f] = rms(x.samples, f * hop, f * hop + win);
        frame_center[f] = (static_cast<double>(f * hop) + static_cast<double>(win) / 2.0) /
                          x.sample_rate;
    }

    const double rel = db_to_amp(p.threshold_db);
    for (std::size_t i = 0; i < onsets.size(); ++i) {
        const double lo = onsets[i];
        const double hi = i + 1 < onsets.size() ? onsets[i + 1] : x.duration();
        // frames whose window would poke past the next onset see the next
        // call's rise and must not count toward this interval
        const double scan_hi = hi - p.rms_window / 2.0;

        double peak = 0.0;
        std::size_t first = n_frames;
        for (std::size_t f = 0; f < n_frames; ++f) {
            if (frame_center[f] < lo || frame_center[f] >= scan_hi) continue;
            if (first == n_frames) first = f;
            peak = std::max(peak, frame_rms[f]);
        }
        if (first == n_frames || peak <= 0.0) continue;

        const double thresh = peak * rel;
        double end = -1.0;
        for (std::size_t f = first; f < n_frames && frame_center[f] < scan_hi; ++f)
            if (frame_rms[f] >= thresh) end = frame_center[f] + p.rms_hop / 2.0;
        if (end < 0.0) continue;
        end = std::min(end, hi);
        if (end <= lo) end = std::min(lo + p.rms_hop, hi);
        if (end > lo) out.push_back(Segment{lo, end});
    }
    return out;
}

inline std::string onsets_to_csv(const std::vector<double>& onsets) {
    std::ostringstream out;
    out << "onset\n";
    out.precision(9);
    for (double t : onsets) out << t << '\n';
    return out.str();
}

inline std::string segments_to_csv(const std::vector<Segment>& segs) {
    std::ostringstream out;
    out << "start,end\n";
    out.precision(9);
    for (const auto& s : segs) out << s.start << ',' << s.end << '\n';
    return out.str();
}

inline std::string envelope_to_csv(const OnsetEnvelope& env) {
    std::ostringstream out;
    out << "time,value\n";
    out.precision(9);
    for (std::size_t f = 0; f < env.values.size(); ++f)
        out << env.t0 + static_cast<double>(f) * env.frame_hop << ',' << env.values[f] << '\n';
    return out.str();
}

}  // namespace peep
