#pragma once

#include <complex>
#include <vector>

#include "peep/audio.hpp"
#include "peep/fft.hpp"
#include "peep/filterbank.hpp"

namespace peep {

// Scattering pipeline:
//   scalogram  : |x * psi_lambda|(t) per band, on a common internal hop
//   s1         : scalogram rows averaged by phi_T, subsampled to T/2^alpha
//   jtfs       : 2-D wavelet convolution of the scalogram over (t, lambda),
//                modulus, separable 2-D averaging, subsampled in both axes
//
// The scalogram keeps its reflect padding (pad_frames on the left); s1/jtfs
// trim it after averaging, so their outputs cover exactly the original clip.
// Rows are ordered by DESCENDING center frequency. With that orientation an
// upward chirp produces a pattern whose 2-D spectrum pairs positive temporal
// modulation with positive log-frequency modulation, so spectral filters
// centered at +2^-v (theta = +1) respond to rising sweeps and their mirrored
// twins (theta = -1) to falling ones.

struct Scalogram {
    Mat values;                      // [n_lambda x n_frames_padded], >= 0
    std::vector<double> lambdas_hz;  // per row, descending
    int hop = 1;                     // audio samples per scalogram frame
    int sample_rate = 0;
    int bins_per_octave = 0;
    std::size_t pad_frames = 0;      // left padding, in scalogram frames
    std::size_t valid_frames = 0;    // frames covering the original clip
    double max_bandwidth_hz = 0.0;   // widest band (modulation admissibility cap)
};

struct S1Matrix {
    Mat values;  // [n_lambda x n_frames], >= 0
    std::vector<double> lambdas_hz;  // per row, descending
    double frame_hop = 0.0;  // seconds
    int t_scale = 0;         // averaging scale, samples
};

struct JtfsPath {
    int v_t = 0;                // temporal-modulation index (0 = fastest)
    int v_f = 0;                // spectral-modulation index; -1 for the lowpass path
    int theta = 0;              // +1 up, -1 down, 0 lowpass-along-lambda
    double mod_rate_hz = 0.0;   // center temporal-modulation rate
};

struct JtfsTensor {
    std::vector<double> values;  // [n_paths][n_lambda_avg][n_frames], >= 0
    std::vector<JtfsPath> paths;
    std::size_t n_lambda_avg = 0;
    std::size_t n_frames = 0;
    double frame_hop = 0.0;  // seconds
    int lambda_stride = 0;   // bins between lambda_avg samples

    double at(std::size_t p, std::size_t l, std::size_t t) const {
        return values[(p * n_lambda_avg + l) * n_frames + t];
    }
    double& at(std::size_t p, std::size_t l, std::size_t t) {
        return values[(p * n_lambda_avg + l) * n_frames + t];
    }
};

namespace detail {

/// Triangle-mirrored index for reflect padding (edge sample not repeated).
inline std::size_t mirror_index(std::ptrdiff_t i, std::size_t len) {
    if (len == 1) return 0;
    const std::ptrdiff_t period = 2 * static_cast<std::ptrdiff_t>(len) - 2;
    std::ptrdiff_t m = i % period;
    if (m < 0) m += period;
    if (m >= static_cast<std::ptrdiff_t>(len)) m = period - m;
    return static_cast<std::size_t>(m);
}

/// Multiplies spectrum by a sparse real response, folds the result modulo
/// n/sub, and inverse-transforms: yields y[k*sub] of the full-rate product.
inline void band_ifft_subsampled(const std::vector<cplx>& spectrum, const WaveletFilter& filt,
                                 std::size_t sub, std::vector<cplx>& out) {
    const std::size_t n = spectrum.size();
    const std::size_t n_sub = n / sub;
    out.assign(n_sub, cplx{0.0, 0.0});
    for (std::size_t t = 0; t < filt.window.size(); ++t) {
        const std::size_t bin = (filt.first_bin + t) % n;
        out[bin % n_sub] += spectrum[bin] * filt.window[t];
    }
    Fft::plan(n_sub).inverse(out);
    if (sub > 1) {
        const double s = 1.0 / static_cast<double>(sub);
        for (auto& v : out) v *= s;
    }
}

inline void band_ifft_subsampled(const std::vector<cplx>& spectrum,
                                 const std::vector<double>& dense_resp, std::size_t sub,
                                 std::vector<cplx>& out) {
    const std::size_t n = spectrum.size();
    const std::size_t n_sub = n / sub;
    out.assign(n_sub, cplx{0.0, 0.0});
    for (std::size_t bin = 0; bin < n; ++bin) {
        if (dense_resp[bin] == 0.0) continue;
        out[bin % n_sub] += spectrum[bin] * dense_resp[bin];
    }
    Fft::plan(n_sub).inverse(out);
    if (sub > 1) {
        const double s = 1.0 / static_cast<double>(sub);
        for (auto& v : out) v *= s;
    }
}

/// Largest power-of-two subsampling that keeps a band with content up to
/// `top_freq` (cycles/sample) clear of aliasing, capped at `max_sub`.
inline std::size_t safe_subsampling(double top_freq, std::size_t max_sub) {
    std::size_t sub = 1;
    while (sub * 2 <= max_sub && top_freq * static_cast<double>(sub * 2) <= 0.4) sub *= 2;
    return sub;
}

}  // namespace detail

/// Common internal hop: a power of two small enough to sample the widest
/// band's envelope, capped by `max_hop` (typically the output hop).
inline int scalogram_auto_hop(const Filterbank& fb, int max_hop) {
    double sigma_max = 0.0;
    for (const auto& f : fb.filters) sigma_max = std::max(sigma_max, f.bandwidth);
    int hop = 1;
    while (hop * 2 <= max_hop && sigma_max * 4.0 * (hop * 2) <= 1.0) hop *= 2;
    return hop;
}

/// |x * psi_lambda|(t) for every band, reflect-padded by `pad_samples` on both
/// ends and stored at a common hop. Rows are ordered by descending frequency.
inline Scalogram scalogram(const AudioClip& x, const Filterbank& fb, int pad_samples,
                           int hop = 0, int max_hop = 0) {
    if (fb.spectral) throw ValidationError("scalogram: needs a temporal filterbank");
    const std::size_t len = x.samples.size();
    if (len < 2 * static_cast<std::size_t>(pad_samples))
        throw ValidationError("scalogram: clip shorter than twice the averaging scale");
    if (hop == 0) hop = scalogram_auto_hop(fb, max_hop > 0 ? max_hop : 1 << 20);
    if (!is_pow2(static_cast<std::size_t>(hop)))
        throw ValidationError("scalogram: hop must be a power of two");

    const std::size_t n_fft = next_pow2(len + 2 * static_cast<std::size_t>(pad_samples));
    const auto h = static_cast<std::size_t>(hop);
    // left pad: exactly pad_samples rounded up to the hop grid, so downstream
    // subsampling stays frame-aligned; the spare all goes to the right wing
    const std::size_t left = (static_cast<std::size_t>(pad_samples) + h - 1) / h * h;

    std::vector<double> padded(n_fft);
    for (std::size_t i = 0; i < n_fft; ++i)
        padded[i] = x.samples[detail::mirror_index(
            static_cast<std::ptrdiff_t>(i) - static_cast<std::ptrdiff_t>(left), len)];

    std::vector<cplx> spectrum(n_fft);
    for (std::size_t i = 0; i < n_fft; ++i) spectrum[i] = cplx(padded[i], 0.0);
    Fft::plan(n_fft).forward(spectrum);

    const std::size_t n_rows = fb.filters.size();
    const std::size_t n_cols = n_fft / h;
    Scalogram out;
    out.values = Mat(n_rows, n_cols);
    out.lambdas_hz.resize(n_rows);
    out.hop = hop;
    out.sample_rate = x.sample_rate;
    out.bins_per_octave = fb.filters_per_octave;
    out.pad_frames = left / h;
    out.valid_frames = (len + h - 1) / h;

    std::vector<cplx> band;
    for (std::size_t r = 0; r < n_rows; ++r) {
        const auto& filt = fb.filters[n_rows - 1 - r];  // descending frequency
        out.lambdas_hz[r] = filt.center_frequency * x.sample_rate;
        out.max_bandwidth_hz =
            std::max(out.max_bandwidth_hz, 2.0 * filt.bandwidth * x.sample_rate);
        detail::band_ifft_subsampled(spectrum, filt, h, band);
        double* row = out.values.row(r);
        for (std::size_t c = 0; c < n_cols; ++c) row[c] = std::abs(band[c]);
    }
    return out;
}

/// First-order coefficients: each scalogram row averaged by phi_T and
/// subsampled to an output hop of T/2^alpha audio samples.
inline S1Matrix s1(const Scalogram& scal, const SeparableLowpass& lp, int alpha) {
    const int t_scale = lp.spec.t;
    if (alpha < 0 || (t_scale >> alpha) == 0)
        throw ValidationError("s1: oversampling exponent too large for T");
    const int hop_out = t_scale >> alpha;
    if (hop_out < scal.hop) throw ValidationError("s1: output hop below the scalogram hop");
    if (scal.valid_frames * static_cast<std::size_t>(scal.hop) <
        static_cast<std::size_t>(t_scale))
        throw ValidationError("s1: clip shorter than the averaging scale");

    const std::size_t n_cols = scal.values.cols;
    const auto step = static_cast<std::size_t>(hop_out / scal.hop);
    const std::size_t n_out =
        (scal.valid_frames + step - 1) / step;
    const std::size_t first = scal.pad_frames / step;  // == 2^alpha by construction

    const std::vector<double> phi = lp.time_response(n_cols, scal.hop);

    S1Matrix out;
    out.values = Mat(scal.values.rows, n_out);
    out.lambdas_hz = scal.lambdas_hz;
    out.frame_hop = static_cast<double>(hop_out) / scal.sample_rate;
    out.t_scale = t_scale;

    std::vector<cplx> buf(n_cols);
    std::vector<cplx> sub;
    for (std::size_t r = 0; r < scal.values.rows; ++r) {
        const double* row = scal.values.row(r);
        for (std::size_t c = 0; c < n_cols; ++c) buf[c] = cplx(row[c], 0.0);
        Fft::plan(n_cols).forward(buf);
        detail::band_ifft_subsampled(buf, phi, step, sub);
        for (std::size_t k = 0; k < n_out; ++k)
            out.values.at(r, k) = std::max(0.0, sub[(first + k) % sub.size()].real());
    }
    return out;
}

struct JtfsOptions {
    bool include_lowpass_fr = true;  // keep the phi_F (theta-less) path set
    std::size_t spectral_fft = 0;    // 0: derive from the spectral bank size
};

/// One separable 2-D wavelet convolution plus modulus, exposed for oracle
/// checks: rows are convolved with psi_t (optionally subsampled), columns
/// with psi_f, both circularly on the given grid.
inline Mat jtfs_single_path_magnitude(const Mat& input, const std::vector<double>& psi_t,
                                      const std::vector<double>& psi_f,
                                      std::size_t t_sub = 1) {
    if (psi_t.size() != input.cols) throw ValidationError("jtfs path: psi_t length mismatch");
    const std::size_t n_fr = psi_f.size();
    if (n_fr < input.rows) throw ValidationError("jtfs path: psi_f shorter than row count");
    const std::size_t n_sub = input.cols / t_sub;

    std::vector<std::vector<cplx>> stage(input.rows);
    std::vector<cplx> buf(input.cols);
    for (std::size_t r = 0; r < input.rows; ++r) {
        const double* row = input.row(r);
        for (std::size_t c = 0; c < input.cols; ++c) buf[c] = cplx(row[c], 0.0);
        Fft::plan(input.cols).forward(buf);
        detail::band_ifft_subsampled(buf, psi_t, t_sub, stage[r]);
    }

    Mat out(n_fr, n_sub);
    std::vector<cplx> col(n_fr);
    for (std::size_t c = 0; c < n_sub; ++c) {
        for (std::size_t r = 0; r < n_fr; ++r)
            col[r] = r < input.rows ? stage[r][c] : cplx{0.0, 0.0};
        Fft::plan(n_fr).forward(col);
        for (std::size_t r = 0; r < n_fr; ++r) col[r] *= psi_f[r];
        Fft::plan(n_fr).inverse(col);
        for (std::size_t r = 0; r < n_fr; ++r) out.at(r, c) = std::abs(col[r]);
    }
    return out;
}

/// Joint time-frequency scattering of a scalogram. For each (v_t, v_f, theta)
/// the separable wavelet is applied over (t, lambda), followed by modulus and
/// 2-D averaging by Phi_{T,F}; outputs are subsampled to T/2^alpha in time and
/// F/2 bins along lambda. Temporal-modulation wavelets faster than the widest
/// first-order band are dropped.
inline JtfsTensor jtfs(const Scalogram& scal, const Filterbank& mod_fb,
                       const Filterbank& spec_fb, const SeparableLowpass& lp, int alpha,
                       const JtfsOptions& opts = {}) {
    if (!spec_fb.spectral) throw ValidationError("jtfs: second bank must be spectral");
    if (mod_fb.spectral) throw ValidationError("jtfs: first bank must be temporal");
    const int t_scale = lp.spec.t;
    const int hop_out = t_scale >> alpha;
    if (hop_out <= 0 || hop_out < scal.hop)
        throw ValidationError("jtfs: output hop below the scalogram hop");
    if (scal.valid_frames * static_cast<std::size_t>(scal.hop) <
        static_cast<std::size_t>(t_scale))
        throw ValidationError("jtfs: clip shorter than the averaging scale");

    const std::size_t n_rows = scal.values.rows;
    const std::size_t n_cols = scal.values.cols;
    if (mod_fb.n_fft != n_cols)
        throw ValidationError("jtfs: temporal-modulation bank size must match the scalogram");
    const std::size_t n_fr = opts.spectral_fft ? opts.spectral_fft : spec_fb.n_fft;
    if (spec_fb.n_fft != n_fr || n_fr < n_rows)
        throw ValidationError("jtfs: spectral bank size must cover the padded lambda axis");

    const auto step_total = static_cast<std::size_t>(hop_out / scal.hop);
    const std::size_t n_out = (scal.valid_frames + step_total - 1) / step_total;

    // lambda-averaging kernel and output grid
    const int stride_f = std::max(1, lp.spec.f / 2);
    const std::size_t n_avg = std::max<std::size_t>(1, n_rows / static_cast<std::size_t>(stride_f));
    int half_f = 0;
    const std::vector<double> taps_f =
        SeparableLowpass::spatial_kernel(static_cast<double>(lp.spec.f), half_f);

    const double scal_rate = static_cast<double>(scal.sample_rate) / scal.hop;

    // row spectra are shared across modulation scales; cache unless huge
    const bool cache_rows = n_rows * n_cols <= (std::size_t{1} << 23);
    std::vector<std::vector<cplx>> row_fft;
    auto compute_row_fft = [&](std::size_t r, std::vector<cplx>& dst) {
        const double* row = scal.values.row(r);
        dst.assign(n_cols, cplx{});
        for (std::size_t c = 0; c < n_cols; ++c) dst[c] = cplx(row[c], 0.0);
        Fft::plan(n_cols).forward(dst);
    };
    if (cache_rows) {
        row_fft.resize(n_rows);
        for (std::size_t r = 0; r < n_rows; ++r) compute_row_fft(r, row_fft[r]);
    }

    JtfsTensor out;
    out.n_lambda_avg = n_avg;
    out.n_frames = n_out;
    out.frame_hop = static_cast<double>(hop_out) / scal.sample_rate;
    out.lambda_stride = stride_f;

    std::vector<cplx> scratch, colbuf(n_fr);
    std::vector<std::vector<cplx>> stage(n_rows);

    for (const auto& mod : mod_fb.filters) {  // ascending rate
        const double rate_hz = mod.center_frequency * scal_rate;
        if (rate_hz > scal.max_bandwidth_hz) continue;  // admissibility
        const int v_t = mod.log_freq_index;

        // temporal stage at a safe intermediate rate
        const std::size_t sub1 = detail::safe_subsampling(
            mod.center_frequency + 4.0 * mod.bandwidth, step_total);
        const std::size_t n1 = n_cols / sub1;
        for (std::size_t r = 0; r < n_rows; ++r) {
            if (cache_rows) {
                detail::band_ifft_subsampled(row_fft[r], mod, sub1, stage[r]);
            } else {
                compute_row_fft(r, scratch);
                detail::band_ifft_subsampled(scratch, mod, sub1, stage[r]);
            }
        }

        // column spectra at the intermediate rate, shared by all spectral filters
        std::vector<cplx> col_fft(n_fr * n1);
        for (std::size_t c = 0; c < n1; ++c) {
            for (std::size_t r = 0; r < n_fr; ++r)
                colbuf[r] = r < n_rows ? stage[r][c] : cplx{0.0, 0.0};
            Fft::plan(n_fr).forward(colbuf);
            for (std::size_t r = 0; r < n_fr; ++r) col_fft[r * n1 + c] = colbuf[r];
        }

        const std::size_t sub2 = step_total / sub1;
        const std::size_t first = scal.pad_frames / step_total;  // == 2^alpha
        const std::vector<double> phi_t = lp.time_response(
            n1, static_cast<double>(scal.hop) * static_cast<double>(sub1));

        auto run_spectral = [&](const WaveletFilter& sf, const JtfsPath& path, bool average_f) {
            // spectral convolution, modulus
            Mat mag(n_rows + static_cast<std::size_t>(2 * half_f) + 2, n1);
            std::vector<cplx> col(n_fr);
            const auto lo_row = -static_cast<std::ptrdiff_t>(half_f) - 1;
            for (std::size_t c = 0; c < n1; ++c) {
                for (std::size_t r = 0; r < n_fr; ++r) col[r] = col_fft[r * n1 + c];
                for (std::size_t r = 0; r < n_fr; ++r) col[r] *= sf.value_at(r);
                Fft::plan(n_fr).inverse(col);
                for (std::size_t rr = 0; rr < mag.rows; ++rr) {
                    const std::ptrdiff_t src = lo_row + static_cast<std::ptrdiff_t>(rr);
                    const std::size_t wrapped =
                        static_cast<std::size_t>((src % static_cast<std::ptrdiff_t>(n_fr) +
                                                  static_cast<std::ptrdiff_t>(n_fr))) % n_fr;
                    mag.at(rr, c) = std::abs(col[wrapped]);
                }
            }

            // lambda averaging (skipped for the lowpass path, already smooth)
            Mat reduced(n_avg, n1);
            for (std::size_t o = 0; o < n_avg; ++o) {
                const auto center = static_cast<std::ptrdiff_t>(o) * stride_f + stride_f / 2;
                for (std::size_t c = 0; c < n1; ++c) {
                    double acc = 0.0;
                    if (average_f) {
                        for (int d = -half_f; d <= half_f; ++d)
                            acc += taps_f[static_cast<std::size_t>(d + half_f)] *
                                   mag.at(static_cast<std::size_t>(center + d - lo_row), c);
                    } else {
                        acc = mag.at(static_cast<std::size_t>(center - lo_row), c);
                    }
                    reduced.at(o, c) = acc;
                }
            }

            // temporal averaging + final subsampling
            const std::size_t base = out.values.size();
            out.values.resize(base + n_avg * n_out, 0.0);
            std::vector<cplx> buf(n1), subbed;
            for (std::size_t o = 0; o < n_avg; ++o) {
                for (std::size_t c = 0; c < n1; ++c) buf[c] = cplx(reduced.at(o, c), 0.0);
                Fft::plan(n1).forward(buf);
                detail::band_ifft_subsampled(buf, phi_t, sub2, subbed);
                for (std::size_t k = 0; k < n_out; ++k)
                    out.values[base + o * n_out + k] =
                        std::max(0.0, subbed[(first + k) % subbed.size()].real());
            }
            out.paths.push_back(path);
        };

        if (opts.include_lowpass_fr)
            run_spectral(spec_fb.lowpass, JtfsPath{v_t, -1, 0, rate_hz}, false);
        for (const auto& sf : spec_fb.filters) {
            const int theta = sf.center_frequency > 0.0 ? 1 : -1;
            run_spectral(sf, JtfsPath{v_t, sf.log_freq_index, theta, rate_hz}, true);
        }
    }
    if (out.paths.empty())
        throw ValidationError("jtfs: no admissible modulation paths for this configuration");
    return out;
}

/// Keeps only paths whose modulation rate falls inside [lo_hz, hi_hz].
inline JtfsTensor select_modulation_band(const JtfsTensor& t, double lo_hz, double hi_hz) {
    if (lo_hz >= hi_hz) throw ValidationError("modulation band: lo must be below hi");
    JtfsTensor out;
    out.n_lambda_avg = t.n_lambda_avg;
    out.n_frames = t.n_frames;
    out.frame_hop = t.frame_hop;
    out.lambda_stride = t.lambda_stride;
    const std::size_t block = t.n_lambda_avg * t.n_frames;
    for (std::size_t p = 0; p < t.paths.size(); ++p) {
        if (t.paths[p].mod_rate_hz < lo_hz || t.paths[p].mod_rate_hz > hi_hz) continue;
        out.paths.push_back(t.paths[p]);
        out.values.insert(out.values.end(), t.values.begin() + static_cast<std::ptrdiff_t>(p * block),
                          t.values.begin() + static_cast<std::ptrdiff_t>((p + 1) * block));
    }
    if (out.paths.empty())
        throw ValidationError("modulation band: selection is empty");
    return out;
}

/// Total energy split between upward and downward oriented paths.
inline std::pair<double, double> direction_energy(const JtfsTensor& t) {
    double up = 0.0, down = 0.0;
    const std::size_t block = t.n_lambda_avg * t.n_frames;
    for (std::size_t p = 0; p < t.paths.size(); ++p) {
        if (t.paths[p].theta == 0) continue;
        double acc = 0.0;
        for (std::size_t i = 0; i < block; ++i) {
            const double v = t.values[p * block + i];
            acc += v * v;
        }
        (t.paths[p].theta > 0 ? up : down) += acc;
    }
    return {up, down};
}

/// Long-format spectrogram summary `time,lambda_hz,value`.
inline std::string s1_to_csv(const S1Matrix& m) {
    std::ostringstream out;
    out << "time,lambda_hz,value\n";
    out.precision(9);
    for (std::size_t r = 0; r < m.values.rows; ++r)
        for (std::size_t c = 0; c < m.values.cols; ++c)
            out << static_cast<double>(c) * m.frame_hop << ','
                << (r < m.lambdas_hz.size() ? m.lambdas_hz[r] : 0.0) << ',' << m.values.at(r, c)
                << '\n';
    return out.str();
}

/// Per-path energy dump `v_t,v_f,theta,mod_rate_hz,energy`.
inline std::string path_energies_csv(const JtfsTensor& t) {
    std::ostringstream out;
    out << "v_t,v_f,theta,mod_rate_hz,energy\n";
    out.precision(9);
    const std::size_t block = t.n_lambda_avg * t.n_frames;
    for (std::size_t p = 0; p < t.paths.size(); ++p) {
        double acc = 0.0;
        for (std::size_t i = 0; i < block; ++i) {
            const double v = t.values[p * block + i];
            acc += v * v;
        }
        const auto& path = t.paths[p];
        out << path.v_t << ',' << path.v_f << ',' << path.theta << ',' << path.mod_rate_hz
            << ',' << acc << '\n';
    }
    return out.str();
}

}  // namespace peep
